fn main() {
    std::process::exit(absa_cli::app::run(std::env::args_os()));
}
