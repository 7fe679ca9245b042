fn main() {
    std::process::exit(lil_lab::cli::run(std::env::args_os()));
}
