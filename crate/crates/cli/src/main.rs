fn main() {
    std::process::exit(opendyn_cli::main_with_args(std::env::args_os()));
}
