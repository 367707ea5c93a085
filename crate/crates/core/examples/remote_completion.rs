//! Completes a rendered orbit through the HTTP completer against a small
//! in-process service that fills uncovered pixels with grey.
//!
//! Usage: `cargo run --release --example remote_completion`

use std::sync::Arc;
use std::thread;

use scene_forge::expand::{init_scene, render_video};
use scene_forge::interfaces::wire::{decode_request, encode_response, error_body, COMPLETE_PATH};
use scene_forge::interfaces::{oracle_stereo, remote_completer, SyntheticWorld, ViewCompleter, WorldParams};
use scene_forge::trajectory::plan_orbit;

fn serve() -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind a local port");
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = Vec::new();
            let _ = req.as_reader().read_to_end(&mut body);
            let (code, text) = match decode_request(&body) {
                Ok(r) if req.url() == COMPLETE_PATH => {
                    let frames: Vec<_> = r
                        .frames
                        .iter()
                        .zip(&r.alphas)
                        .map(|(f, a)| {
                            let mut out = f.clone();
                            for (px, alpha) in out.data.chunks_mut(3).zip(&a.values) {
                                for v in px {
                                    *v = *v * alpha + 0.5 * (1.0 - alpha);
                                }
                            }
                            out
                        })
                        .collect();
                    (200, encode_response(&frames, &r.request_id).expect("encodable"))
                }
                Ok(_) => (404, "{\"error\": \"not found\"}".to_string()),
                Err(e) => (422, error_body(&e)),
            };
            let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(code));
        }
    });
    url
}

fn main() -> scene_forge::Result<()> {
    let world = SyntheticWorld::new(WorldParams {
        width: 120,
        height: 80,
        ..Default::default()
    })?;
    let input = world.render(&world.start_pose)?.color;
    let (scene, _) = init_scene(&input, &oracle_stereo(Arc::new(world.clone())), &world.intrinsics, &world.start_pose)?;
    let pivot = world.start_pose.center() + world.start_pose.forward() * 0.5;
    let traj = plan_orbit(&world.start_pose, &pivot, 60.0, 9, world.intrinsics)?;
    let (frames, alphas) = render_video(&scene, &traj, &world.render_settings)?;

    let url = serve();
    let client = remote_completer(&url, 30.0)?;
    let done = client.complete(&frames, &alphas, &traj)?;
    for (i, (a, f)) in alphas.iter().zip(&done).enumerate() {
        let missing = a.values.iter().filter(|v| **v < 0.5).count();
        let grey = f.data.chunks(3).filter(|p| p.iter().all(|v| (v - 0.5).abs() < 0.01)).count();
        println!("frame {i}: {missing:>5} uncovered pixels, {grey:>5} grey after completion");
    }
    Ok(())
}
