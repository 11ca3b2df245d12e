fn main() {
    std::process::exit(sylva::cli::run(std::env::args_os()));
}
