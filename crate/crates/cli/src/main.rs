fn main() {
    std::process::exit(twinbeam_cli::run(std::env::args_os()));
}
