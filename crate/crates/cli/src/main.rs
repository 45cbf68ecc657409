fn main() {
    std::process::exit(dwlab_cli::run(std::env::args_os()));
}
