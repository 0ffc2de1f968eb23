fn main() {
    std::process::exit(bwp_cli::run(std::env::args_os()));
}
