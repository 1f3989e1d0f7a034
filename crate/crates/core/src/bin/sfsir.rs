fn main() {
    std::process::exit(sfsir::cli::run(std::env::args_os()));
}
