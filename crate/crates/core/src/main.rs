fn main() {
    std::process::exit(collapselab::cli::run_from_args(std::env::args_os()));
}
