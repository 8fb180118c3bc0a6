fn main() {
    std::process::exit(caa_cli::cli_main(std::env::args_os()));
}
