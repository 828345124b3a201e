fn main() {
    std::process::exit(rkdesign::cli::run(std::env::args_os()));
}
