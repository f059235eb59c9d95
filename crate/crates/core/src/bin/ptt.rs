fn main() {
    std::process::exit(ptt::cli::run(std::env::args_os()));
}
