fn main() {
    std::process::exit(cavity_forge::run(std::env::args_os()));
}
