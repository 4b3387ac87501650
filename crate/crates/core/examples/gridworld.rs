//! Steps the predator-prey gridworld by hand: a lone capture is punished,
//! a paired capture removes the prey.

use optmarl::envs::{Action, Environment, PredPreyConfig, PredatorPrey};

fn main() -> optmarl::Result<()> {
    let cfg = PredPreyConfig {
        n_prey: 1,
        prey_move_prob: 0.0,
        ..PredPreyConfig::default()
    };
    let mut env = PredatorPrey::new(cfg, 0)?;
    env.reset();
    env.set_positions(&[(3, 2), (3, 4), (0, 0), (6, 6)], &[(3, 3)])?;

    let stay = Action::Stay.index();
    let capture = Action::Capture.index();

    let out = env.step(&[capture, stay, stay, stay])?;
    println!("lone capture: reward {} events {:?}", out.reward, env.last_events());

    let out = env.step(&[capture, capture, stay, stay])?;
    println!(
        "paired capture: reward {} prey left {} done {}",
        out.reward,
        env.prey_remaining(),
        out.done
    );
    println!("observation width per agent: {}", env.obs_dim());
    Ok(())
}
