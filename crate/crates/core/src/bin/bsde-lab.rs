fn main() {
    std::process::exit(bsde_lab::cli::run(std::env::args_os()));
}
