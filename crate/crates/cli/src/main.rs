fn main() {
    std::process::exit(epiqbd_cli::run(std::env::args_os()));
}
