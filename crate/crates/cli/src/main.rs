fn main() {
    std::process::exit(glass_cli::run(std::env::args_os()));
}
