fn main() {
    std::process::exit(rugose::cli::run_command(std::env::args_os()));
}
