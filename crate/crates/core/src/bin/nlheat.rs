fn main() {
    std::process::exit(nlheat::cli::main_from(std::env::args_os()));
}
