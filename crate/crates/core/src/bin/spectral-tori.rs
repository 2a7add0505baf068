fn main() {
    std::process::exit(spectral_tori::cli::main_with_args(std::env::args_os()));
}
