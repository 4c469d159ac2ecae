fn main() {
    std::process::exit(dfp_core::cli::run(std::env::args_os()));
}
