fn main() {
    std::process::exit(gridlet::cli::run(std::env::args_os()));
}
