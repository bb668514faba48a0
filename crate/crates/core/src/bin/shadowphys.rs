fn main() {
    std::process::exit(shadowphys::cli::run(std::env::args_os()));
}
