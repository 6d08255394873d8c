fn main() {
    std::process::exit(tsr_cli::main_with(std::env::args_os()));
}
