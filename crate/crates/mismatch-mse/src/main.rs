fn main() {
    std::process::exit(mismatch_mse::cli::run());
}
