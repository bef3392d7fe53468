fn main() {
    itsmlab_cli::init_logging();
    std::process::exit(itsmlab_cli::main_with(std::env::args_os()));
}
