fn main() {
    std::process::exit(fbx::cli::dispatch(std::env::args_os()));
}
