fn main() {
    std::process::exit(degregorio_cli::run(std::env::args_os()));
}
