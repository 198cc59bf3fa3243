fn main() {
    std::process::exit(csq::run(std::env::args_os()));
}
