fn main() {
    std::process::exit(smallclip::cli::run(std::env::args_os()));
}
