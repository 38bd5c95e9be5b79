fn main() {
    std::process::exit(paircorr::runner::run(std::env::args_os()));
}
