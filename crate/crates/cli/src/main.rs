fn main() {
    std::process::exit(foodgmm_cli::run(std::env::args_os()));
}
