fn main() {
    std::process::exit(wpc::cli::run(std::env::args_os()));
}
