fn main() {
    std::process::exit(pucch0::cli::run(std::env::args_os()));
}
