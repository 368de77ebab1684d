fn main() {
    std::process::exit(echoloop_cli::run(std::env::args_os()));
}
