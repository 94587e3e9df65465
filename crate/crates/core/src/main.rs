fn main() {
    std::process::exit(neumiss::bench::cli::run(std::env::args_os()));
}
