fn main() {
    std::process::exit(garch_stable::cli::run(std::env::args_os()));
}
