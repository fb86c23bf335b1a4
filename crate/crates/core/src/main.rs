fn main() {
    std::process::exit(ltsi_relax::cli::run(std::env::args_os()));
}
