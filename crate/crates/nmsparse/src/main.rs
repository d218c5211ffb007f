fn main() {
    std::process::exit(nmsparse::cli::dispatch(std::env::args_os()));
}
