fn main() {
    std::process::exit(autobid::cli::dispatch(std::env::args_os()));
}
