fn main() {
    std::process::exit(tracelens_cli::main_with(std::env::args_os()));
}
