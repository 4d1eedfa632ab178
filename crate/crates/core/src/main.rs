fn main() {
    std::process::exit(oamturb::cli::run(std::env::args_os()));
}
