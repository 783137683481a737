fn main() {
    std::process::exit(congestion_cli::main_with(std::env::args_os()));
}
