fn main() {
    std::process::exit(bbpe::cli::run(std::env::args_os()));
}
