fn main() {
    std::process::exit(av2t_cli::run_from(std::env::args_os()));
}
