"""One forecaster, two losses.

The learner issues a probability under square loss and a randomised yes/no
call under absolute loss, and the two must agree on which side of 1/2 they
fall.  Square loss is mixable, so regret to the square-loss experts stays
below a constant however long the game runs.

    python demos/two_losses.py
"""

import math

from defensive_forecasting.environments import BinaryForecast
from defensive_forecasting.learners import make_two_loss

K = M = 3
env, learner = BinaryForecast(K, M, seed=4), make_two_loss(K, M)
for t in range(1, 1001):
    sq, bl = env.experts(t)
    learner.predict(sq, bl)
    rec = learner.update(env.outcome(t))
    if t in (10, 100, 1000):
        print(f"t={t:>4}  square regrets {learner.square_regrets().round(3)}  "
              f"absolute regrets {learner.boolean_regrets().round(1)}  f={rec.f_value:.4f}")
print(f"square-loss guarantee: ln({K + M})/2 = {0.5 * math.log(K + M):.4f}")
