fn main() {
    std::process::exit(mvtc::run(std::env::args_os()));
}
