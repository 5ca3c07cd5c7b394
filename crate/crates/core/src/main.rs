fn main() {
    std::process::exit(grdpg::cli::run(std::env::args_os()));
}
