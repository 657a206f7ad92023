// Solves dY = sigma(Y) dB for the trig2d field on one fBm path with every
// scheme and prints the sup error against a fine simplified Milstein solution.

#include "fbmsde/error_metrics.hpp"
#include "fbmsde/fbm.hpp"
#include "fbmsde/levy_area.hpp"
#include "fbmsde/schemes.hpp"
#include "fbmsde/vector_field.hpp"

#include <cstdio>
#include <vector>

using namespace fbmsde;

int main() {
    const double hurst = 0.7;
    const std::size_t n_fine = 1 << 14;
    const VectorField field = make_trig2d();
    const std::vector<double> a{1.0};

    const FbmPath fine = sample_fbm(hurst, 1.0, n_fine, field.dim_noise(), 42, 0);
    const Trajectory reference = simplified_milstein(field, fine, a);
    std::printf("trig2d, H = %.2f, Y_1 = %.6f (reference on %zu steps)\n\n", hurst,
                reference.states(n_fine, 0), n_fine);

    std::printf("%6s %12s %12s %12s %12s\n", "n", "euler", "milstein", "davie", "wz_taylor2");
    for (std::size_t n = 16; n <= 1024; n *= 4) {
        const std::size_t factor = n_fine / n;
        const FbmPath coarse = subsample(fine, factor);
        const Trajectory runs[] = {
            euler(field, coarse, a),
            simplified_milstein(field, coarse, a),
            davie_milstein(field, coarse, area_fine_reference(fine, factor), a),
            wong_zakai_solve(field, coarse, a, 64, OdeIntegrator::taylor2),
        };
        std::printf("%6zu", n);
        for (const Trajectory& t : runs) std::printf(" %12.3e", sup_error_on_grid({reference, t, 0.4}));
        std::printf("\n");
    }
}
