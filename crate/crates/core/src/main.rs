fn main() {
    std::process::exit(wfefc::cli::run(std::env::args_os()));
}
