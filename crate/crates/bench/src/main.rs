fn main() {
    std::process::exit(laker_bench::cli::cli_main(std::env::args_os()));
}
