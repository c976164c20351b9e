fn main() {
    std::process::exit(supercool::cli::run_from_args(std::env::args_os()));
}
