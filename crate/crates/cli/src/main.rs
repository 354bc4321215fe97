fn main() {
    std::process::exit(parlang_cli::run_cli(std::env::args_os()));
}
