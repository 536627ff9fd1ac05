fn main() {
    std::process::exit(singular_vhc::cli::run(std::env::args_os()));
}
