fn main() {
    std::process::exit(fsi_cli::run(std::env::args_os()));
}
