fn main() {
    std::process::exit(orpca_cli::run_cli(std::env::args_os()));
}
