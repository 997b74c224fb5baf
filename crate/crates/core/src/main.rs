fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ALPHA_IOU_LOG", "warn")).init();
    std::process::exit(alpha_iou::cli::run(std::env::args_os()));
}
