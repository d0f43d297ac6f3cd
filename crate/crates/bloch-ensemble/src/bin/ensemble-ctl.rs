fn main() {
    std::process::exit(bloch_ensemble::cli::run_experiment(std::env::args_os()));
}
