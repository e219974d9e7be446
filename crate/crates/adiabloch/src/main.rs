fn main() {
    std::process::exit(adiabloch::bench::cli::cli_main(std::env::args_os()));
}
