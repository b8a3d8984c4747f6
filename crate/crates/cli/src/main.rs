fn main() {
    std::process::exit(ionflux_cli::run(std::env::args_os()));
}
