fn main() {
    std::process::exit(ayn_cli::run(std::env::args_os()));
}
