fn main() {
    std::process::exit(trajpred::cli::run(std::env::args_os()));
}
