fn main() {
    std::process::exit(padiclab_cli::main_with_args(std::env::args_os()));
}
