fn main() {
    std::process::exit(tgroups::cli::main_from(std::env::args_os()));
}
