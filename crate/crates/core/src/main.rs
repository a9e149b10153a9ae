fn main() {
    std::process::exit(lpm::cli::run_from_env());
}
