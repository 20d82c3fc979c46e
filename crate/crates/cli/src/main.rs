fn main() {
    std::process::exit(uucap::run(std::env::args_os()));
}
