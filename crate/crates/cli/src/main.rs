fn main() {
    std::process::exit(pendular_lab::run(std::env::args_os()));
}
