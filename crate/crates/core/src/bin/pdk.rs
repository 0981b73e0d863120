fn main() {
    std::process::exit(panoptic_depth::cli::run(std::env::args_os()));
}
