fn main() {
    std::process::exit(qpcocycle_cli::main_with_args(std::env::args_os()));
}
