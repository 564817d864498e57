fn main() {
    std::process::exit(zole::cli::run(std::env::args_os()));
}
