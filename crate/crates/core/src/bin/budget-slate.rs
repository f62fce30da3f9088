fn main() {
    std::process::exit(budget_slate::cli::run_command(std::env::args_os()));
}
