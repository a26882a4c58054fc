fn main() {
    std::process::exit(acoustic_repro::cli::main_with_args(std::env::args_os()));
}
