fn main() {
    std::process::exit(cass_cli::run(std::env::args_os()));
}
