fn main() {
    std::process::exit(kacbox_cli::run(std::env::args_os()));
}
