fn main() {
    std::process::exit(driftflow::cli::run(std::env::args_os()));
}
